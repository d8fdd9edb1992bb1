fn main() {
    std::process::exit(heatlab::cli::run(std::env::args_os()));
}
