import sys

from imuplace.cli import main

sys.exit(main())
