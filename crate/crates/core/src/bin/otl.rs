fn main() {
    std::process::exit(otl::cli::run(std::env::args_os()));
}
