fn main() {
    std::process::exit(roughdelay::cli::run(std::env::args_os()));
}
