fn main() -> std::process::ExitCode {
    thematica::cli::main()
}
