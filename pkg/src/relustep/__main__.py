from relustep.cli import main

main()
