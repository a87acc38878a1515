"""Entry point for running the command-line tool."""

from src.app.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
