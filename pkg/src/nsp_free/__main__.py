import sys

from nsp_free.cli import main

sys.exit(main())
