# Command-line package; the entry point is src.cli.main
