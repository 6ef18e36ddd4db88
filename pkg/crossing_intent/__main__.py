import sys

from crossing_intent.cli import main

sys.exit(main())
