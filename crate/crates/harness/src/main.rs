fn main() {
    if let Err(error) = resque_harness::cli::run() {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
