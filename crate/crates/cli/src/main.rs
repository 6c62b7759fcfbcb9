fn main() {
    std::process::exit(shiftlens::run(std::env::args_os()));
}
