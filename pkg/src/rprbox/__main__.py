import sys

from rprbox.cli import main

sys.exit(main())
