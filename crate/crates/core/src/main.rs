fn main() {
    std::process::exit(dt6d::cli::run(std::env::args_os()));
}
