import sys

from hop.cli import main

sys.exit(main())
