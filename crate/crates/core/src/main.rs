fn main() -> anyhow::Result<()> {
    contention_lab::cli::main()
}
