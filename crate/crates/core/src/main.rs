fn main() {
    std::process::exit(g2bin::cli::run(std::env::args_os()));
}
