fn main() {
    std::process::exit(treekd_cli::run(std::env::args_os()));
}
