fn main() {
    std::process::exit(landmark_risk::cli::run(std::env::args_os()));
}
