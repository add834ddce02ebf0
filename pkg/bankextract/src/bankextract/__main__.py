import sys

from bankextract.cli import main

sys.exit(main())
