fn main() {
    std::process::exit(sisbound::cli::run(std::env::args_os()));
}
