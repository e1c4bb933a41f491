import sys

from sppm.cli import main

sys.exit(main())
