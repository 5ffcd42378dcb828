import sys

from dynbinval.cli import main

sys.exit(main())
