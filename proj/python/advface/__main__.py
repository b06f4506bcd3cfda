import sys

from . import cli


def main():
    return cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
