fn main() {
    std::process::exit(oran_lab::cli::run(std::env::args_os()));
}
