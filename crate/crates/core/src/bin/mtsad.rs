fn main() {
    std::process::exit(mtsad::cli::run(std::env::args_os()));
}
