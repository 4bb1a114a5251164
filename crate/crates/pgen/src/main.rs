fn main() {
    std::process::exit(pgen::cli::run(std::env::args_os()));
}
