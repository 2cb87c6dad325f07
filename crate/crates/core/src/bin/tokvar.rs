fn main() -> std::process::ExitCode {
    tokvar::cli::main()
}
