import sys

from layermatch.cli import main

sys.exit(main())
