fn main() {
    std::process::exit(dynrisk::cli::run(std::env::args_os()));
}
