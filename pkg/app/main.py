import sys

from nvo.cli import main

if __name__ == "__main__":
  try:
    sys.exit(main())
  except Exception:
    exit(1)
