fn main() {
    std::process::exit(ltpe::cli::run(std::env::args_os()));
}
