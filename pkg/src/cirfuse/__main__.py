from cirfuse.cli import main

main()
