fn main() {
    std::process::exit(idtrack_cli::run(std::env::args_os()));
}
