import sys

from lemica.cli import main

sys.exit(main())
