fn main() {
    std::process::exit(instmeter::cli::run(std::env::args_os()));
}
