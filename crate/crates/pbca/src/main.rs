fn main() {
    std::process::exit(pbca::cli::run(std::env::args().skip(1).collect()));
}
