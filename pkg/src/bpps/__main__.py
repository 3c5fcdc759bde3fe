import sys

from bpps.cli import main

sys.exit(main())
