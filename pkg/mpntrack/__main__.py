import sys

from mpntrack.cli import main

sys.exit(main())
