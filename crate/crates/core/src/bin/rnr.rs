fn main() {
    std::process::exit(retrieve_read::cli::main());
}
