fn main() {
    std::process::exit(deface::cli::run(std::env::args_os()));
}
