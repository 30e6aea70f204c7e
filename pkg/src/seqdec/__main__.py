import sys

from seqdec.cli import main

sys.exit(main())
