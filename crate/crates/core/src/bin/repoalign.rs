fn main() {
    std::process::exit(repoalign::cli::run(std::env::args_os()));
}
