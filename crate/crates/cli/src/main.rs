fn main() {
    camoe_cli::run();
}
