fn main() {
    std::process::exit(hydrogat::cli::run(std::env::args_os()));
}
