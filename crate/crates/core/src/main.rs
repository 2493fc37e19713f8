fn main() -> std::process::ExitCode {
    evolvefem::cli::main()
}
