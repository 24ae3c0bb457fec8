#!/usr/bin/env python3

from dotenv import load_dotenv

from cclt.app import cli
from cclt.config import setup_logging


def main():
    load_dotenv()
    setup_logging()
    cli()


if __name__ == "__main__":
    main()
