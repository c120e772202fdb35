fn main() {
    std::process::exit(hgpr::cli::run(std::env::args_os()));
}
