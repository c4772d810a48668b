// Placeholder; the CLI is assembled after the harness module lands.
int main() { return 0; }
