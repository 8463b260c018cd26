fn main() -> std::process::ExitCode {
    gammae::cli::main()
}
