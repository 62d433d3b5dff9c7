import sys

from tcurband.cli import main

sys.exit(main())
