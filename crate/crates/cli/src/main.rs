fn main() {
    std::process::exit(fewtopic_cli::run(std::env::args_os()));
}
