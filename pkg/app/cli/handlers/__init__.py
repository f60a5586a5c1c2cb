# subcommand handlers
