import sys

from hygrohom.cli import main

sys.exit(main())
