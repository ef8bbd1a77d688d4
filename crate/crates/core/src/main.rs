fn main() {
    std::process::exit(ffvt::cli::run(std::env::args_os()));
}
