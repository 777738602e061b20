import sys

from canyonsim.cli import main

sys.exit(main())
