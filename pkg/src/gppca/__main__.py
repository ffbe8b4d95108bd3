import sys

from gppca.cli import main

sys.exit(main())
