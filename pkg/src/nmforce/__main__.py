import sys

from nmforce.cli import main

sys.exit(main())
