import sys

from dosa.harness.cli import main

sys.exit(main())
