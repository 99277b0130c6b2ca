fn main() -> std::process::ExitCode {
    mamba_va::cli::main()
}
