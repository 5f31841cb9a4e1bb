fn main() {
    std::process::exit(modeseek::cli::run(std::env::args_os()));
}
