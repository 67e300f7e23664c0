fn main() {
    std::process::exit(gruq_cli::run(std::env::args_os()));
}
