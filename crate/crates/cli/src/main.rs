fn main() {
    std::process::exit(misalign_cli::run(std::env::args_os()));
}
