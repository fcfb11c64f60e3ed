fn main() {
    std::process::exit(announcer_gateway::cli::main());
}
