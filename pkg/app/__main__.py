from app.cli import cli


def main():
    cli(prog_name="python -m app")


if __name__ == "__main__":
    main()
