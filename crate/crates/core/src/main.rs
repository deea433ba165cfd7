fn main() {
    std::process::exit(ivunion::cli::run(std::env::args_os()));
}
