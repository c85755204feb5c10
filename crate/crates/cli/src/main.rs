fn main() {
    std::process::exit(matchbias_cli::run(std::env::args_os()));
}
