fn main() {
    std::process::exit(kepler_kit::cli::run(std::env::args_os()));
}
