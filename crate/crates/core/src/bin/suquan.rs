fn main() -> std::process::ExitCode {
    suquan::cli::main()
}
