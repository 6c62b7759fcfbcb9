//! Brute-force reference implementations used by integration tests.
#![allow(dead_code)]

/// Naive UPGMA: every step recomputes each cluster-pair distance as the mean
/// of all raw cross-pair distances. Returns `(a, b, height, size)` rows.
pub fn upgma(square: &[Vec<f64>]) -> Vec<(usize, usize, f64, usize)> {
    let n = square.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut rows = Vec::new();
    let mut next_id = n;
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for p in 0..clusters.len() {
            for q in p + 1..clusters.len() {
                let (ip, mp) = &clusters[p];
                let (iq, mq) = &clusters[q];
                let mut total = 0.0;
                for &x in mp {
                    for &y in mq {
                        total += square[x][y];
                    }
                }
                let h = total / (mp.len() * mq.len()) as f64;
                let (a, b) = ((*ip).min(*iq), (*ip).max(*iq));
                let take = match best {
                    None => true,
                    Some((bh, ba, bb, _, _)) => h < bh || (h == bh && (a, b) < (ba, bb)),
                };
                if take {
                    best = Some((h, a, b, p, q));
                }
            }
        }
        let (h, a, b, p, q) = best.unwrap();
        let mut members = clusters[p].1.clone();
        members.extend_from_slice(&clusters[q].1);
        clusters.remove(q);
        clusters.remove(p);
        rows.push((a, b, h, members.len()));
        clusters.push((next_id, members));
        next_id += 1;
    }
    rows
}

/// Cophenetic distance matrix of a linkage given as `(a, b, height, size)`.
pub fn cophenetic(n: usize, rows: &[(usize, usize, f64, usize)]) -> Vec<Vec<f64>> {
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut c = vec![vec![0.0; n]; n];
    for &(a, b, h, _) in rows {
        for &x in &members[a] {
            for &y in &members[b] {
                c[x][y] = h;
                c[y][x] = h;
            }
        }
        let mut m = members[a].clone();
        m.extend_from_slice(&members[b]);
        members.push(m);
    }
    c
}

/// Labels where `i` and `j` share a cluster iff their cophenetic distance is
/// `<= t`; 1-based in order of first appearance.
pub fn partition(coph: &[Vec<f64>], t: f64) -> Vec<usize> {
    let n = coph.len();
    let mut labels = vec![0usize; n];
    let mut next = 1;
    for i in 0..n {
        if labels[i] != 0 {
            continue;
        }
        for j in i..n {
            if labels[j] == 0 && coph[i][j] <= t {
                labels[j] = next;
            }
        }
        next += 1;
    }
    labels
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

/// Condensed Euclidean distances by direct double loop.
pub fn pdist_euclidean(points: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            out.push(euclidean(&points[i], &points[j]));
        }
    }
    out
}

/// Composite trapezoid rule.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 1..x.len() {
        s += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
    }
    s
}
