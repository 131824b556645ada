fn main() {
    std::process::exit(binpick::cli::run(std::env::args_os()));
}
