fn main() -> std::process::ExitCode {
    asyndgan::cli::main()
}
