fn main() {
    std::process::exit(twinbeam::cli::run(std::env::args_os()));
}
