import sys

from moco_greedy.cli import main

sys.exit(main())
