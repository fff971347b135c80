fn main() {
    std::process::exit(gcdlab_cli::run(std::env::args_os()));
}
