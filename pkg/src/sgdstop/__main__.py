import sys

from sgdstop.cli import main

sys.exit(main())
