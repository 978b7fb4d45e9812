fn main() {
    std::process::exit(turnpike_core::cli::run(std::env::args_os()));
}
