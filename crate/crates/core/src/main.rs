fn main() -> std::process::ExitCode {
    rfi_scrub::cli::main()
}
